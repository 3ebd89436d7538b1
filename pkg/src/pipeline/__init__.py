# Pipeline Module
