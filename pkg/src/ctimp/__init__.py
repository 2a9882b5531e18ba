"""CTI-driven detection and self-healing platform.

Pipeline: threat feeds are ingested as STIX indicators, tailored against the
organization's asset map, compiled into SIGMA detection rules, matched against
decoded log events, and matched alerts drive a human-in-the-loop response
engine with a full audit trail.
"""

__version__ = "0.1.0"
