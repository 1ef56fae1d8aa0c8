# Documents written to and read from disk
