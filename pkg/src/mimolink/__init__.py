"""Link-level MIMO channel simulation toolkit.

Implements stochastic tapped delay line (TDL) and geometric clustered
delay line (CDL) channel models following TR 38.901, a reduced-CDL
derivation pipeline (angular scaling, cluster truncation, delay
rescaling, randomness reduction), receive-side spatial analysis
(Bartlett profiles, eigenmode SINR), Type-I and enhanced Type-II CSI
codebooks with PMI selection, and an effective-SINR link abstraction
for throughput evaluation.
"""

__version__ = "0.1.0"
