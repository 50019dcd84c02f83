"""Deterministic Monte Carlo link-level simulator for vertical heterogeneous networks.

Two scenario engines are provided: a two-cell mmWave downlink assisted by a
full-duplex high-altitude relay (``vhetsim.relay``) and an aerial cell-free
uplink backhauled to a high-altitude central processor over sub-THz links
(``vhetsim.cellfree``), plus the shared channel, array-processing, power
allocation, and experiment-harness toolboxes they are built from.
"""

__version__ = "0.1.0"
