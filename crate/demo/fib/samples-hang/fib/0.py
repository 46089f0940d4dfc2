def fib(n: int):
    # Summing a huge range runs in native code and ignores interrupts.
    sum(range(10 ** 15))
    return n
