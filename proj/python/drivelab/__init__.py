"""Synthetic driving-model laboratory: world generation, map matching, training and evaluation."""

from ._drivelab import (
    ConfigError,
    DriveLog,
    Dataset,
    EvalError,
    GpsTrace,
    HmmParams,
    MatchError,
    MatchedPath,
    PidError,
    RoadNetwork,
    Route,
    RunConfig,
    StageError,
    TrainError,
    TrainedModel,
    WorldError,
    ablate,
    accuracy_metrics,
    build_dataset,
    comfort_metrics,
    corrupt_gps,
    evaluate,
    fnv1a_hex,
    generate_network,
    loss_accuracy,
    loss_comfort,
    pid_filter,
    pid_tune,
    predict_test,
    random_route,
    run_pipeline,
    simulate_reference_driver,
    train,
    viterbi_match,
)

__all__ = [name for name in dir() if not name.startswith("_")]
