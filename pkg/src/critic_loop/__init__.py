"""Two-stage LLM annotation with a self-reflective critic.

An inclusive first pass labels every (passage, code) pair against an
LLM-adapted codebook; a second pass critiques only the predicted positives
under a sufficiency rule and a two-class error taxonomy. Audit tooling
samples positives for human review, and the metrics layer reconstructs
deployment-rate performance from case-control style estimates.
"""

__version__ = "0.1.0"
