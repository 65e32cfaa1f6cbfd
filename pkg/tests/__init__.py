# ICU-SIR Tests
