# coding=utf-8
"""Leaf disease classification with compound-scaled networks and Noisy Student
self-training, built on a small numpy autodiff engine."""
import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())
