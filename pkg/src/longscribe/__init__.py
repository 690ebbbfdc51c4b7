"""Long-form multi-speaker transcription toolkit: rich transcriptions, DER/WER/cpWER/tcpWER, corpus preparation."""
__version__ = '0.1.0'
