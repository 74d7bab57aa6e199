"""Length-based curriculum learning for CTC-trained recurrent sequence recognizers."""

from .ctc import InfeasibleTargetError, best_path_decode, ctc_grad, ctc_nll
from .dataset import Corpus, CorpusSpec, Sample, generate_corpus, load_corpus, save_corpus, split_into_words
from .harness import (
    ConvergencePoint,
    ExperimentConfig,
    compare_strategies,
    read_csv,
    run_by_hand,
    run_experiment,
    write_csv,
)
from .metrics import EvalReport, cer, edit_distance, evaluate, norm_nll
from .model import ModelConfig, ModelState, forward, init_model, sgd_step
from .sampler import (
    BaselineSampler,
    CurriculumSampler,
    CurriculumSchedule,
    SamplingWeights,
    draw_curriculum,
    lambda_at,
    shortness,
)

__version__ = "0.1.0"
