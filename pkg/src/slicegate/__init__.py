"""Policy-gated exchange of message slices: attribute-based encryption,
content-addressed storage, a ledger-backed registry, and the stateless
manager services that tie them together."""

__version__ = "0.1.0"
