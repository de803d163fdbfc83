"""Package initialization files for subdirectories."""