"""symscribe: symptom-mention extraction and assertion for clinical notes."""

__version__ = "0.1.0"

#: Version string embedded in every pipeline output record and printed by
#: ``symscribe --version``.
PIPELINE_VERSION = f"symscribe/{__version__}"
