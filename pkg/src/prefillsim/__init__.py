"""Discrete-event simulator of multi-model disaggregated LLM serving.

Compares per-model isolation ("baseline") against a shared-prefill
configuration ("prefillshare") in which all models' requests are prefilled
by one shared base module whose KV cache is reusable across models.
"""

__version__ = "0.1.0"
