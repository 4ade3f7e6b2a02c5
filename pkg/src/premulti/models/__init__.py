"""Built-in systems with their expected-fact tables."""

from .base import Fact, ModelSpec
from .em import model_em
from .metric_affine import model_metric_affine
from .toy import model_mechanics, model_r5, model_r6, model_r8

MODELS = {
    "r8": model_r8,
    "r5": model_r5,
    "r6": model_r6,
    "mechanics": model_mechanics,
    "em": model_em,
    "ma": model_metric_affine,
}
