# Services package

