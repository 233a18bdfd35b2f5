"""specdet: detect Spectre-V1 vulnerable code and in-flight cache attacks.

Two pipelines share one classifier suite:

* static (preventive): assembly gadgets are ingested, tokenized, embedded
  with skip-gram vectors, and classified as victim or benign code;
* microarchitectural (reactive): per-process hardware-counter samples
  (L3 accesses, L3 misses, instructions) are classified as attack or
  benign activity.
"""

__version__ = "0.1.0"
