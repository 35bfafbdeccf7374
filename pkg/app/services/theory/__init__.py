# Theory package
