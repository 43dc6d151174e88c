# flake8: noqa
# Primitives
from ctanet.core.synth import generate_dataset
from ctanet.core.train import train_model
from ctanet.core.evaluator import model_evaluator
from ctanet.core.ablation import run_ablation
from ctanet.core.explain import explain_video
