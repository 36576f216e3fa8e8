"""Keystroke-dynamics screening toolkit.

Thin Python face over the C++ core; all heavy lifting happens in the
`_kdscreen` extension. CSV/JSON text formats are shared with the `kdscreen`
CLI, so artifacts move freely between the two.
"""

try:  # wheel layout: extension lives inside the package
    from . import _kdscreen as _core
except ImportError:  # plain cmake build: extension sits on sys.path
    import _kdscreen as _core

ConfigError = _core.ConfigError
DataError = _core.DataError
MetricUndefinedError = _core.MetricUndefinedError

auc_roc = _core.auc_roc
derive_seed = _core.derive_seed
f1 = _core.f1
generate_cohort = _core.generate_cohort
make_folds = _core.make_folds
preprocess_events = _core.preprocess_events
resolved_config = _core.resolved_config
run = _core.run
shuffle_labels = _core.shuffle_labels
stream_tag = _core.stream_tag
window_count = _core.window_count

__all__ = [
    "ConfigError",
    "DataError",
    "MetricUndefinedError",
    "auc_roc",
    "derive_seed",
    "f1",
    "generate_cohort",
    "make_folds",
    "preprocess_events",
    "resolved_config",
    "run",
    "shuffle_labels",
    "stream_tag",
    "window_count",
]
