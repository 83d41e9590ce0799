"""ATT&CK-tagged threat-intelligence reports for deobfuscated scripts."""
