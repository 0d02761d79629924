"""DynaGRAG: graph-retrieval-augmented generation over weighted knowledge graphs."""

__version__ = "0.1.0"
