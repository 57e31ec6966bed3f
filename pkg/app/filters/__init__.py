# Backward-time ensemble filters
