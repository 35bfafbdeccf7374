# Retrieval package
