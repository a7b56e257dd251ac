"""Multi-class grasp decoding from EEG with EMG-gated trial segments.

The public surface is organized by stage:

* :mod:`graspbci.io_formats` - BrainVision and session-bundle I/O
* :mod:`graspbci.preprocess` - filtering, channel selection, epoching
* :mod:`graspbci.emg_gating` - EMG onset detection and segment selection
* :mod:`graspbci.features_csp` - common spatial patterns
* :mod:`graspbci.classify_lda` - LDA and the one-versus-rest decoder
* :mod:`graspbci.evaluate` - repeated stratified CV and reports
* :mod:`graspbci.synthgen` - synthetic sessions with ground truth
"""
from .errors import GraspBCIError
from .evaluate import compare_pipelines, render_report, run_cv, stratified_folds
from .io_formats import Recording, load_recording
from .pipeline import PipelineConfig, prepare_dataset
from .synthgen import SynthSpec, gen_session

__version__ = "0.1.0"

__all__ = [
    "GraspBCIError", "PipelineConfig", "Recording", "SynthSpec", "compare_pipelines",
    "gen_session", "load_recording", "prepare_dataset", "render_report", "run_cv",
    "stratified_folds",
]
