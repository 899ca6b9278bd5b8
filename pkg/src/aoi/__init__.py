"""Permission-separated multi-agent incident response at desk scale.

A planning agent that never touches the cluster, a read-only probe, a
whitelist-gated executor, and a budgeted context compressor run against a
deterministic simulated cluster. Around the runtime: trajectory judging,
purification and repair, group-normalized reward machinery with training
batch export, and the evaluation metrics and fixtures to verify it all.
"""

__version__ = "0.1.0"
