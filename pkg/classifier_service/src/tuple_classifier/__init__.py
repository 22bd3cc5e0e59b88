"""Campaign classifier over `<subject, relation, object>` tuple texts.

Fine-tunes a compact transformer encoder with a linear classification head
on labeled tuples and serves per-tuple campaign probability distributions
over HTTP. Majority voting across an article's tuples is the consumer's
job, not this service's.
"""

__version__ = "0.1.0"
