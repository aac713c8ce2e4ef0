"""irmatch: learned matching of LLVM-IR file pairs.

Parses textual IR into heterogeneous program graphs, tokenizes node
text with a small byte-pair vocabulary, and scores graph pairs with a
graph attention network trained from scratch on CPU.
"""

__version__ = "0.1.0"
