"""Multi-agent airspace deconfliction workbench.

Route-based fleet simulator, attention actor-critic trainer, rule-based
and random baselines, and an evaluation harness with CSV/JSON reports.
"""

__version__ = "0.1.0"
