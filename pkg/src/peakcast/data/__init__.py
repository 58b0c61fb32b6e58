"""Dataset schema, synthetic generation, file formats, and batching."""

from .io import (
    MANIFEST_VERSION,
    ParseError,
    load_dataset,
    read_manifest,
    write_csv,
    write_jsonl,
    write_manifest,
)
from .pipeline import (
    SCALE_FLOOR,
    Batch,
    Scalers,
    SplitError,
    inverse_normalize,
    make_batches,
    normalize,
    split_by_time,
    stack_samples,
)
from .schema import DataError, Dataset, FeatureSchema, Sample
from .synthetic import (
    WEEKS_PER_YEAR,
    CalendarEvent,
    GeneratorConfig,
    desk_generator_config,
    generate_synthetic,
    reference_generator_config,
)

__all__ = [
    "Batch",
    "CalendarEvent",
    "DataError",
    "Dataset",
    "FeatureSchema",
    "GeneratorConfig",
    "MANIFEST_VERSION",
    "ParseError",
    "SCALE_FLOOR",
    "Sample",
    "Scalers",
    "SplitError",
    "WEEKS_PER_YEAR",
    "desk_generator_config",
    "generate_synthetic",
    "inverse_normalize",
    "load_dataset",
    "make_batches",
    "normalize",
    "read_manifest",
    "reference_generator_config",
    "split_by_time",
    "stack_samples",
    "write_csv",
    "write_jsonl",
    "write_manifest",
]
