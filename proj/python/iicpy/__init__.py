from ._iic import (
    accuracy,
    evaluate,
    hungarian_match,
    iic_loss,
    joint_matrix,
    majority_map,
    mi_gradient_oracle,
    mutual_information,
    seg_joint,
    select_subhead,
    sobel,
    train,
)

__all__ = [
    "accuracy",
    "evaluate",
    "hungarian_match",
    "iic_loss",
    "joint_matrix",
    "majority_map",
    "mi_gradient_oracle",
    "mutual_information",
    "seg_joint",
    "select_subhead",
    "sobel",
    "train",
]
