"""URL and domain indicators recovered from deobfuscated droppers."""
