"""Investment-interval labeling and map-based ranking for weekly price series."""

from .changepoint import (
    ChangePointSet,
    CusumParams,
    IntervalSet,
    TargetSize,
    consolidate,
    cusum_detect,
    segment,
    tune_hypersensitive,
)
from .config import PipelineConfig, load_config
from .errors import (
    AlignmentError,
    ParseError,
    SominvestError,
    StageError,
    TuningError,
    ValidationError,
)
from .featsel import (
    FeatureMatrix,
    ImportanceRanking,
    PcaResult,
    clean_features,
    ext_importance,
    pca_fit,
    select_top_k,
    zscore_normalize,
)
from .fwc import (
    FwcMatrix,
    RankedResult,
    VoteGrid,
    WeightMode,
    accumulate_votes,
    build_fwc,
    convolve,
    fractional_weighted,
    gaussian_kernel,
    rank_vectors,
)
from .ingest import (
    CompanyDataset,
    FeatureRecord,
    InclusionReport,
    PricePoint,
    PriceSeries,
    align_and_log,
    apply_inclusion_rules,
    load_fundamentals,
    load_prices,
)
from .labeling import (
    IntervalLabel,
    LabeledVector,
    LabelMethod,
    Normality,
    PowerSpec,
    ReturnPair,
    label_interval,
    mann_whitney_one_tailed,
    min_sample_size,
    normality_check,
    sliding_window_labels,
    welch_one_tailed,
)
from .pipeline import PipelineState, run_pipeline
from .som import (
    InitScheme,
    LabeledComponentPlane,
    SomGrid,
    TrainConfig,
    Umatrix,
    batch_train,
    bmu,
    init_codebook,
    load_codebook,
    project_labels,
    quantization_error,
    save_codebook,
    umatrix,
)
from .synthgen import GroundTruth, SynthSpec, generate, write_fixture

__version__ = "0.1.0"
