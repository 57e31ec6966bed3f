# Subcommand definitions
