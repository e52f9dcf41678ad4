"""Meshfree RBF solvers for distributed optimal control of convection-diffusion."""
