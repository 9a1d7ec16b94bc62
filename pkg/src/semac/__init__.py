"""Multi-slot modulation design for over-the-air function computation.

Modules
-------
funcspace
    Input alphabets, target functions, combination enumeration, constraints.
conic
    Complex semidefinite programs solved through a real embedding.
moddesign
    Lifted modulation design and low-rank recovery.
powerad
    Power and phase adaptation for fixed modulations under fading.
airsim
    Channels, power control, superposition and noise.
decode
    Constellation tables, maximum-likelihood decoding, tabular outputs.
evalcli
    Monte Carlo evaluation and the command-line interface.
"""
__version__ = "0.1.0"
