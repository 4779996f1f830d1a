"""replyrank: rank candidate replies to a multi-turn dialogue.

A small from-scratch stack: a float64 tape-based autodiff engine with
swappable compiled/numpy kernels, a joint context-candidate encoder,
cross-candidate comparison, history and speaker consistency matching,
and a softmax ranking head trained with Adam and explicit L2.
"""

__version__ = "0.1.0"
