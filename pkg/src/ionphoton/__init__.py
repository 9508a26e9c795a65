"""Trapped-ion single-photon source simulator and analysis toolkit.

Subpackages cover the eight-level atomic model (`atom`), Lindblad dynamics
(`bloch`, `wavepacket`), dark-resonance calibration (`calibration`), the
non-classicality and quantum non-Gaussianity witnesses (`witness`), the
detection-chain Monte Carlo (`detection`) and time-tag analysis (`tags`).
"""

__version__ = "0.1.0"
