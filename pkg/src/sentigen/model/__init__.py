from sentigen.model.checkpoint import load_checkpoint, save_checkpoint
from sentigen.model.config import ModelConfig
from sentigen.model.network import (
    BOS_ID,
    EOS_ID,
    UNK_ID,
    DecoderStep,
    EncoderState,
    LossContext,
    PointerSeq2Seq,
)
from sentigen.model.params import Param, Parameters
from sentigen.model.training import (
    Adam,
    GradientDescent,
    TrainingDiverged,
    make_optimizer,
    train_epoch,
)
from sentigen.model.vocab import TrainExample, Vocabulary, build_examples

__all__ = [
    "Adam",
    "BOS_ID",
    "DecoderStep",
    "EOS_ID",
    "EncoderState",
    "GradientDescent",
    "LossContext",
    "ModelConfig",
    "Param",
    "Parameters",
    "PointerSeq2Seq",
    "TrainExample",
    "TrainingDiverged",
    "UNK_ID",
    "Vocabulary",
    "build_examples",
    "load_checkpoint",
    "make_optimizer",
    "save_checkpoint",
    "train_epoch",
]
