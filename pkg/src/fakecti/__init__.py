"""Concept-based CTI indicators for disinformation campaign attribution.

Turns fake-news articles into `<subject, relation, object>` tuple
indicators via a chat-completion endpoint and attributes articles to known
disinformation campaigns by lexical similarity voting, lexical
thresholding, semantic-embedding voting, or majority voting over an
external classifier's per-tuple predictions.
"""

__version__ = "0.1.0"
