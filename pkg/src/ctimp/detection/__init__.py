"""Log decoding and rule evaluation: decoders, rules, alerts."""

from .decoders import (  # noqa: F401
    CAPTURE_VOCABULARY,
    DecodedEvent,
    Decoder,
    DecoderError,
    DecoderSet,
    LogEvent,
    decode,
    load_decoders_toml,
)
from .rules import (  # noqa: F401
    AllOf,
    AnyOf,
    CondOp,
    DetectionRule,
    FieldTest,
    Frequency,
    NotOf,
    RuleLoadError,
    RuleOrigin,
    eval_condition,
    load_native_rules_toml,
    load_sigma_rules,
    validate_rules,
)
from .engine import (  # noqa: F401
    Alert,
    AlertStatus,
    AlertStore,
    FrequencyState,
    IllegalTransition,
    RuleMatch,
    evaluate,
    raise_alert,
)
