"""Desk-scale world-model lab: coupled action sampling over a denoising
process, decoupled-budget time schedules, a rectified-flow latent dynamics
model, and an actor-critic trained in imagination on a toy ring-world."""

__version__ = "0.1.0"
