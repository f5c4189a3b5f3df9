"""Executable MPC model and constant-round reductions between graph problems."""
