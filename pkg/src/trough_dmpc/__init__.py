"""Distributed MPC of parabolic-trough loop flows with ALADIN and dynamic clustering."""
