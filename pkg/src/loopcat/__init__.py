"""Simulation and analysis toolkit for a time-multiplexed optical loop processor.

Submodules:

- ``fock``: truncated Fock-space states, channels and phase-space functions
- ``modes``: temporal mode functions and beam-splitter reshaping
- ``network``: compilation of variable-beam-splitter programs into bin networks
- ``homodyne``: synthetic homodyne samples/traces and mode estimators
- ``tomography``: maximum-likelihood reconstruction and the loss-decay fit
- ``experiments`` / ``cli``: the memory and beam-splitter workflows
"""

__version__ = "0.1.0"
