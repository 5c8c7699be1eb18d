"""Cross-city demand predictor with adversarial domain adaptation."""
from .losses import joint_loss, loss_domain, loss_ranking, loss_regression
from .model import (
    CHARGER_TYPES,
    InstanceSet,
    ModelPair,
    PredictorModel,
    TrainConfig,
    TrainingDivergedError,
    build_instances,
    city_instances,
    evaluate_rmse,
    fit_models,
    gradient_check,
    joint_gradient,
    load_checkpoint,
    predict,
    predict_city,
    save_checkpoint,
    train,
)
from .network import Architecture, DemandNetwork

__all__ = [
    "Architecture", "CHARGER_TYPES", "DemandNetwork", "InstanceSet", "ModelPair", "PredictorModel",
    "TrainConfig", "TrainingDivergedError", "build_instances", "city_instances", "evaluate_rmse",
    "fit_models", "gradient_check", "joint_gradient", "joint_loss", "load_checkpoint", "loss_domain",
    "loss_ranking", "loss_regression", "predict", "predict_city", "save_checkpoint", "train",
]
