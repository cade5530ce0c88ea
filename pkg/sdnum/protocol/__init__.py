"""Coordinator / site-agent message passing over TCP."""

from .wire import (
    KINDS,
    VERSION,
    WireMessage,
    decode,
    decode_stream,
    encode,
    price_message,
    window_advance_message,
)
from .agent import SiteAgent, parse_endpoint, serve_site
from .remote import RemoteSite, coordinate, model_from_dict, parse_sites

__all__ = [
    "KINDS",
    "VERSION",
    "WireMessage",
    "decode",
    "decode_stream",
    "encode",
    "price_message",
    "window_advance_message",
    "SiteAgent",
    "parse_endpoint",
    "serve_site",
    "RemoteSite",
    "coordinate",
    "model_from_dict",
    "parse_sites",
]
