# Data models and enums