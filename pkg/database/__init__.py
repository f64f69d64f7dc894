# Database package

