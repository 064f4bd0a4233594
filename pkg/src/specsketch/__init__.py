"""specsketch: sketch-compressed spectral estimation for simulation output.

Compress a streaming (time x particles) signal with a random sketch and
recover its time autocorrelation and power spectral density from the
compressed representation, alongside the classical subsampling baselines
(time, particle, entrywise, block and hierarchical correlators) for
error-versus-compression benchmarking.
"""

from .baselines import (
    EntrySampleSet,
    SamplingScheme,
    TimeIndexSet,
    autocorr_entrywise,
    autocorr_particle_subsampled,
    autocorr_time_subsampled,
    block_correlator,
    hierarchical_correlator,
    interpolate_missing_lags,
    lag_counts,
    sample_entries,
    sample_time,
    smallest_wichmann,
    wichmann_marks,
)
from .metrics import (
    ErrorReport,
    StorageReport,
    gram_autocorr_bounds,
    psd_errors,
    required_compression_ratio,
    storage_report,
)
from .sketch import SketchKind, SketchOperator, apply, draw, required_dim
from .spectral import (
    AllocationAudit,
    AutocorrEstimate,
    PowerSpectrum,
    SketchedBlock,
    TimeSeriesSource,
    autocorr_direct,
    autocorr_fft,
    autocorr_from_sketch,
    bartlett_window,
    block_seed,
    column_autocorr,
    estimate_from_blocks,
    psd_from_autocorr,
    run_pipeline,
    sketch_blocks,
)
from .synth import (
    AdversarialConfig,
    TwoFrequencyConfig,
    freq_bin,
    gen_adversarial,
    gen_two_frequency,
    omega_bin,
    two_frequency_truth,
)

__version__ = "0.1.0"
