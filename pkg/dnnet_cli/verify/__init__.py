"""
Invariant verification suite
"""

from .suite import CHECKS, CheckResult, VerificationReport, run_suite

__all__ = ["CHECKS", "CheckResult", "VerificationReport", "run_suite"]
