"""Acoustic-metamaterial voice-assistant defense toolkit."""
