# API package

