"""hopgen: knowledge-graph grounded text generation with multi-hop
evidence propagation and a gated copy mechanism."""

__version__ = "0.1.0"
