"""Command-line surface: experiment config validation and subcommand dispatch"""
