"""Query-budgeted black-box robustness evaluation for video classifiers.

Two cooperating policy networks pick which frames and which hierarchical
patches of a video to distort, a query-counted victim provides the only
feedback, and a replayable perturbation ledger supports post-success
distortion reversion and perturbation accounting.
"""

__version__ = "0.1.0"
