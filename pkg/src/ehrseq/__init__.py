"""EHR event-stream serialization, encoder layer planning, VQ mechanics, and
synthetic-data quality/privacy audits."""

__version__ = "0.1.0"
