"""Multi-teacher knowledge distillation for motion-artifact detection.

Frozen per-domain teacher networks plus a domain-adversarial teacher feed a
transformer aggregator whose fused embedding supervises a small student
network; the student is then fine-tuned on a tiny labelled subset of the
target domain.  Includes a synthetic multi-domain phantom benchmark with
k-space motion corruption and an evaluation/ablation harness.
"""

__version__ = "0.1.0"
