"""Robust quantum-gate pulse synthesis workbench.

Compares four controllers on single- and two-qubit gate synthesis under
multiplicative Hamiltonian disturbances: GRAPE, naive gradient ascent, PPO,
and a two-loop meta-reinforcement-learning controller.
"""

__version__ = "0.1.0"
