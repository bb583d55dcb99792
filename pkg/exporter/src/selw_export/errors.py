class ExportError(Exception):
    """Any failure while converting a checkpoint: unsupported ops, shape or
    reference mismatches, malformed weight files."""
