from .exporter import (
    DEFAULT_MODEL,
    DuplicateId,
    ExportError,
    ExportManifest,
    ModelLoadError,
    export_embeddings,
    read_catalog,
    verify_export,
    verify_export_detail,
)

__all__ = [
    "DEFAULT_MODEL",
    "DuplicateId",
    "ExportError",
    "ExportManifest",
    "ModelLoadError",
    "export_embeddings",
    "read_catalog",
    "verify_export",
    "verify_export_detail",
]
