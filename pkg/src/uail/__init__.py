"""Uncertainty-gated imitation learning lab.

A desk-scale laboratory for studying dropout-based predictive uncertainty
in end-to-end continuous control: a small regression policy with MC-dropout
sampling, an uncertainty score built from categorical and temporal
dispersion measures, four data-collection strategies (behavior cloning,
stochastic mixing, noise injection, uncertainty-gated switching), a
deterministic 2D lane-graph driving simulator, and infraction-prediction
ROC evaluation.
"""

__version__ = "0.1.0"
