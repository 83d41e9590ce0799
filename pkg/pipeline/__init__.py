"""Command-line pipeline: decode, deobfuscate, extract, consult the model, report."""
