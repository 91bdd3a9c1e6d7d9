"""Node handlers.

A handler receives (node, message, context) and returns the payload to send on
every outgoing wire, or None to drop the message.
"""
import hashlib
import json


def passthrough(node, message, context):
    return message.payload


def work(node, message, context):
    """Synthetic CPU-bound job: a digest chain of work_units rounds over the payload"""
    units = int(message.payload.get("work_units", node.config["work_units"]))
    if units < 0:
        raise ValueError(f"work_units must not be negative, got {units}")
    digest = hashlib.sha256(json.dumps(message.payload, sort_keys=True).encode("utf-8")).digest()
    for _ in range(units):
        digest = hashlib.sha256(digest).digest()
    return {**message.payload, "result": digest.hex()}


def change(node, message, context):
    return {**message.payload, node.config["key"]: node.config.get("value", "")}


def default_registry():
    return {
        "inject": passthrough,
        "work": work,
        "change": change,
        "link-in": passthrough,
        "link-out": passthrough,
        "sink": passthrough,
    }
