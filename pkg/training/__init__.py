"""
Optimisation: learning-rate schedule, Nadam, the training loop and checkpoints.
"""
