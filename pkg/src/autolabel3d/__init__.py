"""Sparse-to-dense 3D track auto-labeling engine.

Turns a handful of 3D annotations per object track into dense, temporally
consistent 3D track pseudolabels, and evaluates them with CLEAR-MOT, IDF1,
and AMOTA/AMOTP. Learned components are replaced by pluggable providers
backed by a deterministic scene simulator.
"""

__version__ = "0.1.0"
