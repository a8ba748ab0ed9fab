#pragma once

// Text formats for every artifact the library reads or writes.
//
//  RoadNetwork   JSON  {"format":"drivelab.road_network","version":1,"nodes":[{id,x,y}],
//                       "edges":[{id,from,to,speed_limit,polyline:[[x,y],...],
//                                 traffic_lights,pedestrian_crossings,yield_signs}]}
//  Route         JSON  {"legs":[{"edge":id,"forward":bool}],"start_offset","end_offset"}
//  DriveLog      CSV   t,s,v,x,y,heading,routeOffset
//  GpsTrace      CSV   t,x,y
//  MatchedPath   CSV   t,edgeId,offset,x,y
//  FeatureRow    CSV   sequence,index,t,m14_*,m56_*,ego_*,target_s_*,target_v_*,frame fields
//  Predictions   CSV   sequence,index,s,v
//
// CSV files may start with `# key=value` comment lines (rate, sigma,
// config_hash); readers skip them and expose them as metadata.

#include <map>
#include <string>
#include <vector>

#include "drivelab/mapfeatures.hpp"
#include "drivelab/mapmatch.hpp"
#include "drivelab/roadworld.hpp"
#include "drivelab/tensorcore.hpp"

namespace drivelab {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Metadata = std::map<std::string, std::string>;

/// Shortest decimal representation that round-trips a double.
std::string format_double(double v);

std::string network_to_json(const RoadNetwork& net);
RoadNetwork network_from_json(const std::string& text);

std::string route_to_json(const Route& route);
Route route_from_json(const std::string& text);

std::string drive_log_to_csv(const DriveLog& log, const Metadata& meta = {});
DriveLog drive_log_from_csv(const std::string& text, Metadata* meta = nullptr);

std::string gps_trace_to_csv(const GpsTrace& trace, const Metadata& meta = {});
GpsTrace gps_trace_from_csv(const std::string& text, Metadata* meta = nullptr);

std::string matched_path_to_csv(const MatchedPath& path, const Metadata& meta = {});
MatchedPath matched_path_from_csv(const std::string& text, Metadata* meta = nullptr);

std::string feature_rows_to_csv(const std::vector<FeatureRow>& rows, const Metadata& meta = {});
std::vector<FeatureRow> feature_rows_from_csv(const std::string& text, Metadata* meta = nullptr);

/// One-step predictions (2 x rows) keyed by the rows' sequence and index.
std::string predictions_to_csv(const Matrix& predictions, const std::vector<FeatureRow>& rows,
                               const Metadata& meta = {});
/// Ground-truth one-step targets in the same layout as predictions.
std::string truths_to_csv(const std::vector<FeatureRow>& rows, const Metadata& meta = {});

/// Parsed CSV table with named columns.
struct CsvTable {
  Metadata meta;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
std::string write_csv(const CsvTable& table);

std::string read_file(const std::string& path);
/// Writes via a temporary file and rename so readers never see a partial file.
void write_file(const std::string& path, const std::string& contents);

}  // namespace drivelab
