"""Governed orchestration control-plane runtime.

Every interaction between worker modules passes through a single pipeline:
semantic validation, symbolic mediation, policy evaluation, epistemic
assessment, human review gates, and tamper-evident provenance anchoring.
"""

__version__ = "0.1.0"
