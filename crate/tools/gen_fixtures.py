#!/usr/bin/env python3
"""Writes the fixture corpus: <name>/<variant>.sevm under fixtures/corpus.

xa-base is the canonical form, xa-alt restructures or unrolls it, ab-base
carries it to the other calling convention. Register conventions:
  xa: args r1-r6, return r0, stack r15, scratch r7-r14
  ab: args a2-a7, return a1, stack a0, scratch a8-a15
"""

import os
import shutil
import sys

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "sevm", "fixtures", "corpus")

FIXTURES = {}


def fn(name):
    def deco(f):
        FIXTURES[name] = f()
        return f
    return deco


# Mechanical xa -> ab register rename (the ABI translation).
AB_MAP = {f"r{i}": f"a{(i + 1) % 16 if i != 15 else 0}" for i in range(16)}
AB_MAP["r15"] = "a0"
for i in range(15):
    AB_MAP[f"r{i}"] = f"a{i + 1}"


def to_ab(xa_text):
    out = []
    for line in xa_text.splitlines():
        # Replace longer names first so r1 does not clobber r10..r15.
        for i in sorted(range(16), reverse=True):
            line = line.replace(f"r{i}", AB_MAP[f"r{i}"])
        line = line.replace(" xa", " ab", 1) if line.startswith(".func") else line
        out.append(line)
    return "\n".join(out) + "\n"


@fn("identity")
def _():
    base = """\
; returns its first argument unchanged
.func identity xa
    mov r0, r1
    ret
.end
"""
    alt = """\
.func identity xa
    mov r9, r1
    mov r0, r9
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("abs_val")
def _():
    base = """\
; absolute value under two's complement
.func abs_val xa
    li r7, 0
    mov r0, r1
    bge r1, r7, done
    li r0, 0
    sub r0, r1
done:
    ret
.end
"""
    alt = """\
.func abs_val xa
    mov r8, r1
    li r9, 0
    bge r8, r9, pos
    sub r9, r8
    mov r0, r9
    ret
pos:
    mov r0, r8
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(alt)}


@fn("max2")
def _():
    base = """\
; signed maximum of two arguments
.func max2 xa
    mov r0, r1
    bge r1, r2, done
    mov r0, r2
done:
    ret
.end
"""
    alt = """\
.func max2 xa
    mov r11, r2
    bge r2, r1, keep
    mov r11, r1
keep:
    mov r0, r11
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("min2")
def _():
    base = """\
; signed minimum of two arguments
.func min2 xa
    mov r0, r1
    blt r1, r2, done
    mov r0, r2
done:
    ret
.end
"""
    alt = """\
.func min2 xa
    mov r12, r2
    blt r2, r1, keep
    mov r12, r1
keep:
    mov r0, r12
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("add3")
def _():
    base = """\
.func add3 xa
    mov r0, r1
    add r0, r2
    add r0, r3
    ret
.end
"""
    alt = """\
.func add3 xa
    mov r7, r2
    add r7, r3
    add r7, r1
    mov r0, r7
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("mul_add")
def _():
    base = """\
; a * b + c
.func mul_add xa
    mov r0, r1
    mul r0, r2
    add r0, r3
    ret
.end
"""
    alt = """\
.func mul_add xa
    mov r10, r2
    mul r10, r1
    mov r0, r3
    add r0, r10
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("popcount")
def _():
    base = """\
; number of set bits
.func popcount xa
    li r0, 0
    mov r7, r1
loop:
    li r8, 0
    beq r7, r8, done
    mov r9, r7
    li r10, 1
    and r9, r10
    add r0, r9
    shr r7, r10
    jmp loop
done:
    ret
.end
"""
    alt = """\
; two bits per iteration
.func popcount xa
    li r0, 0
    mov r12, r1
loop:
    li r13, 0
    beq r12, r13, done
    li r11, 1
    mov r14, r12
    and r14, r11
    add r0, r14
    shr r12, r11
    beq r12, r13, done
    mov r14, r12
    and r14, r11
    add r0, r14
    shr r12, r11
    jmp loop
done:
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("parity")
def _():
    base = """\
; xor of all bits
.func parity xa
    li r0, 0
    mov r9, r1
loop:
    li r10, 0
    beq r9, r10, done
    mov r11, r9
    li r12, 1
    and r11, r12
    xor r0, r11
    shr r9, r12
    jmp loop
done:
    ret
.end
"""
    alt = """\
; fold halves, then take the low bit
.func parity xa
    mov r0, r1
    li r7, 32
    mov r8, r0
    shr r8, r7
    xor r0, r8
    li r7, 16
    mov r8, r0
    shr r8, r7
    xor r0, r8
    li r7, 8
    mov r8, r0
    shr r8, r7
    xor r0, r8
    li r7, 4
    mov r8, r0
    shr r8, r7
    xor r0, r8
    li r7, 2
    mov r8, r0
    shr r8, r7
    xor r0, r8
    li r7, 1
    mov r8, r0
    shr r8, r7
    xor r0, r8
    and r0, r7
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("is_even")
def _():
    base = """\
.func is_even xa
    mov r0, r1
    li r7, 1
    and r0, r7
    xor r0, r7
    ret
.end
"""
    alt = """\
.func is_even xa
    li r8, 1
    mov r9, r1
    and r9, r8
    mov r0, r8
    sub r0, r9
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("sign_of")
def _():
    base = """\
; -1, 0, or 1 by the sign of the argument
.func sign_of xa
    li r7, 0
    li r0, 0
    beq r1, r7, done
    blt r1, r7, neg
    li r0, 1
    ret
neg:
    li r0, -1
done:
    ret
.end
"""
    alt = """\
.func sign_of xa
    li r10, 0
    blt r1, r10, neg
    beq r1, r10, zero
    li r0, 1
    ret
zero:
    li r0, 0
    ret
neg:
    li r0, -1
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("my_div")
def _():
    base = """\
; *c = a / b; returns 0
.func my_div xa
    div r1, r2
    st [r3+0], r1
    li r0, 0
    ret
.end
"""
    alt = """\
.func my_div xa
    mov r7, r1
    div r7, r2
    st [r3+0], r7
    li r0, 0
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("str_len")
def _():
    base = """\
; bytes before the first NUL
.func str_len xa
    mov r7, r1
scan:
    ldb r8, [r7+0]
    li r9, 0
    beq r8, r9, done
    addi r7, 1
    jmp scan
done:
    mov r0, r7
    sub r0, r1
    ret
.end
"""
    alt = """\
; index-based scan
.func str_len xa
    li r0, 0
scan:
    mov r10, r1
    add r10, r0
    ldb r11, [r10+0]
    li r12, 0
    beq r11, r12, done
    addi r0, 1
    jmp scan
done:
    ret
.end
"""
    ab = """\
.func str_len ab
    mov a9, a2
scan:
    ldb a10, [a9+0]
    li a11, 0
    beq a10, a11, done
    addi a9, 1
    jmp scan
done:
    mov a1, a9
    sub a1, a2
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": ab}


@fn("str_copy")
def _():
    base = """\
; copies src including the terminator, returns dst
.func str_copy xa
    mov r7, r1
    mov r8, r2
loop:
    ldb r9, [r8+0]
    stb [r7+0], r9
    li r10, 0
    beq r9, r10, done
    addi r7, 1
    addi r8, 1
    jmp loop
done:
    mov r0, r1
    ret
.end
"""
    alt = """\
.func str_copy xa
    li r11, 0
loop:
    mov r12, r2
    add r12, r11
    ldb r13, [r12+0]
    mov r12, r1
    add r12, r11
    stb [r12+0], r13
    li r14, 0
    beq r13, r14, done
    addi r11, 1
    jmp loop
done:
    mov r0, r1
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("mem_cmp")
def _():
    base = """\
; -1/0/1 over at most n bytes
.func mem_cmp xa
    li r7, 0
loop:
    beq r7, r3, equal
    mov r8, r1
    add r8, r7
    ldb r9, [r8+0]
    mov r8, r2
    add r8, r7
    ldb r10, [r8+0]
    blt r9, r10, less
    blt r10, r9, greater
    addi r7, 1
    jmp loop
equal:
    li r0, 0
    ret
less:
    li r0, -1
    ret
greater:
    li r0, 1
    ret
.end
"""
    alt = """\
; cursor walk with a countdown
.func mem_cmp xa
    mov r11, r1
    mov r12, r2
    mov r13, r3
loop:
    li r14, 0
    beq r13, r14, equal
    ldb r9, [r11+0]
    ldb r10, [r12+0]
    blt r9, r10, less
    blt r10, r9, greater
    addi r11, 1
    addi r12, 1
    addi r13, -1
    jmp loop
equal:
    li r0, 0
    ret
less:
    li r0, -1
    ret
greater:
    li r0, 1
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("str_chr")
def _():
    base = """\
; pointer to the first occurrence of c, 0 when the string ends first
.func str_chr xa
    li r7, 0xff
    mov r8, r2
    and r8, r7
    mov r9, r1
loop:
    ldb r10, [r9+0]
    beq r10, r8, found
    li r11, 0
    beq r10, r11, missing
    addi r9, 1
    jmp loop
found:
    mov r0, r9
    ret
missing:
    li r0, 0
    ret
.end
"""
    alt = """\
.func str_chr xa
    li r12, 0xff
    mov r13, r2
    and r13, r12
    li r14, 0
loop:
    mov r7, r1
    add r7, r14
    ldb r8, [r7+0]
    beq r8, r13, found
    li r9, 0
    beq r8, r9, missing
    addi r14, 1
    jmp loop
found:
    mov r0, r1
    add r0, r14
    ret
missing:
    li r0, 0
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("count_byte")
def _():
    base = """\
; occurrences of c before the first NUL
.func count_byte xa
    li r0, 0
    li r7, 0xff
    mov r8, r2
    and r8, r7
    mov r9, r1
loop:
    ldb r10, [r9+0]
    li r11, 0
    beq r10, r11, done
    bne r10, r8, skip
    addi r0, 1
skip:
    addi r9, 1
    jmp loop
done:
    ret
.end
"""
    alt = """\
.func count_byte xa
    li r0, 0
    li r12, 0xff
    mov r13, r2
    and r13, r12
    li r14, 0
loop:
    mov r7, r1
    add r7, r14
    ldb r8, [r7+0]
    li r9, 0
    beq r8, r9, done
    addi r14, 1
    bne r8, r13, loop
    addi r0, 1
    jmp loop
done:
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("sum8")
def _():
    base = """\
; sum of eight 64-bit elements
.func sum8 xa
    li r0, 0
    li r7, 0
    mov r8, r1
loop:
    li r9, 8
    beq r7, r9, done
    ld r10, [r8+0]
    add r0, r10
    addi r8, 8
    addi r7, 1
    jmp loop
done:
    ret
.end
"""
    alt = """\
; fully unrolled
.func sum8 xa
    ld r0, [r1+0]
    ld r11, [r1+8]
    add r0, r11
    ld r11, [r1+16]
    add r0, r11
    ld r11, [r1+24]
    add r0, r11
    ld r11, [r1+32]
    add r0, r11
    ld r11, [r1+40]
    add r0, r11
    ld r11, [r1+48]
    add r0, r11
    ld r11, [r1+56]
    add r0, r11
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("min_index8")
def _():
    base = """\
; index of the smallest of eight elements (signed)
.func min_index8 xa
    li r0, 0
    ld r7, [r1+0]
    li r8, 1
loop:
    li r9, 8
    beq r8, r9, done
    mov r10, r8
    li r11, 8
    mul r10, r11
    add r10, r1
    ld r11, [r10+0]
    bge r11, r7, skip
    mov r7, r11
    mov r0, r8
skip:
    addi r8, 1
    jmp loop
done:
    ret
.end
"""
    alt = """\
.func min_index8 xa
    li r0, 0
    ld r12, [r1+0]
    mov r13, r1
    li r14, 1
loop:
    li r9, 8
    beq r14, r9, done
    addi r13, 8
    ld r9, [r13+0]
    bge r9, r12, skip
    mov r12, r9
    mov r0, r14
skip:
    addi r14, 1
    jmp loop
done:
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("dot8")
def _():
    base = """\
; dot product of two 8-element vectors
.func dot8 xa
    li r0, 0
    mov r7, r1
    mov r8, r2
    li r9, 0
loop:
    li r10, 8
    beq r9, r10, done
    ld r11, [r7+0]
    ld r12, [r8+0]
    mul r11, r12
    add r0, r11
    addi r7, 8
    addi r8, 8
    addi r9, 1
    jmp loop
done:
    ret
.end
"""
    alt = """\
; byte-offset loop
.func dot8 xa
    li r0, 0
    li r13, 0
loop:
    li r14, 64
    beq r13, r14, done
    mov r9, r1
    add r9, r13
    ld r10, [r9+0]
    mov r9, r2
    add r9, r13
    ld r11, [r9+0]
    mul r10, r11
    add r0, r10
    addi r13, 8
    jmp loop
done:
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("fill8")
def _():
    base = """\
; writes v to eight consecutive cells, returns 0
.func fill8 xa
    mov r7, r1
    li r8, 0
loop:
    li r9, 8
    beq r8, r9, done
    st [r7+0], r2
    addi r7, 8
    addi r8, 1
    jmp loop
done:
    li r0, 0
    ret
.end
"""
    alt = """\
.func fill8 xa
    st [r1+0], r2
    st [r1+8], r2
    st [r1+16], r2
    st [r1+24], r2
    st [r1+32], r2
    st [r1+40], r2
    st [r1+48], r2
    st [r1+56], r2
    li r0, 0
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("swap_ends")
def _():
    base = """\
; swaps the first and last of eight cells, returns 0
.func swap_ends xa
    ld r7, [r1+0]
    ld r8, [r1+56]
    st [r1+0], r8
    st [r1+56], r7
    li r0, 0
    ret
.end
"""
    alt = """\
.func swap_ends xa
    ld r12, [r1+56]
    ld r13, [r1+0]
    st [r1+56], r13
    st [r1+0], r12
    li r0, 0
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("node_value")
def _():
    base = """\
; value field (offset 8) of the node linked at offset 16
.func node_value xa
    ld r7, [r1+16]
    ld r0, [r7+8]
    ret
.end
"""
    alt = """\
.func node_value xa
    mov r9, r1
    ld r10, [r9+16]
    ld r0, [r10+8]
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("chain_value")
def _():
    base = """\
; follows two links (offset 16) then reads the value at offset 8
.func chain_value xa
    ld r7, [r1+16]
    ld r8, [r7+16]
    ld r0, [r8+8]
    ret
.end
"""
    alt = """\
.func chain_value xa
    mov r11, r1
    ld r11, [r11+16]
    ld r11, [r11+16]
    ld r0, [r11+8]
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("touch_log")
def _():
    base = """\
; reports syscall 7, returns its argument
.func touch_log xa
    sys 7
    mov r0, r1
    ret
.end
"""
    alt = """\
.func touch_log xa
    mov r7, r1
    sys 7
    mov r0, r7
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("double_note")
def _():
    base = """\
; reports syscalls 3 and 9, returns a + b
.func double_note xa
    sys 3
    sys 9
    mov r0, r1
    add r0, r2
    ret
.end
"""
    alt = """\
; same syscall set, other order
.func double_note xa
    mov r8, r1
    add r8, r2
    sys 9
    sys 3
    mov r0, r8
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("twin_flip")
def _():
    base = """\
; xor of the two arguments
.func twin_flip xa
    mov r0, r1
    xor r0, r2
    ret
.end
"""
    alt = """\
.func twin_flip xa
    mov r9, r2
    xor r9, r1
    mov r0, r9
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


@fn("twin_swirl")
def _():
    base = """\
; xor computed as (a | b) - (a & b)
.func twin_swirl xa
    mov r7, r1
    or r7, r2
    mov r8, r1
    and r8, r2
    mov r0, r7
    sub r0, r8
    ret
.end
"""
    alt = """\
; xor computed as (a & ~b) | (~a & b)
.func twin_swirl xa
    li r9, -1
    mov r10, r2
    xor r10, r9
    and r10, r1
    mov r11, r1
    xor r11, r9
    and r11, r2
    mov r0, r10
    or r0, r11
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


def gated(name, op):
    base = f"""\
; {op}s the arguments behind a magic guard, -1 otherwise
.func {name} xa
    li r7, 0x1337c0de
    bne r1, r7, bad
    mov r0, r1
    {op} r0, r2
    ret
bad:
    li r0, -1
    ret
.end
"""
    alt = f"""\
.func {name} xa
    li r12, 0x1337c0de
    beq r1, r12, good
    li r0, -1
    ret
good:
    mov r0, r1
    {op} r0, r2
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


FIXTURES["gated_add"] = gated("gated_add", "add")
FIXTURES["gated_sub"] = gated("gated_sub", "sub")
FIXTURES["gated_xor"] = gated("gated_xor", "xor")


@fn("div_trap")
def _():
    base = """\
; faults on every input
.func div_trap xa
    li r7, 0
    div r1, r7
    ret
.end
"""
    alt = """\
.func div_trap xa
    li r9, 0
    mov r8, r1
    div r8, r9
    ret
.end
"""
    return {"xa-base": base, "xa-alt": alt, "ab-base": to_ab(base)}


def main():
    if os.path.isdir(OUT):
        shutil.rmtree(OUT)
    count = 0
    for name, variants in sorted(FIXTURES.items()):
        d = os.path.join(OUT, name)
        os.makedirs(d)
        for variant, text in sorted(variants.items()):
            with open(os.path.join(d, f"{variant}.sevm"), "w") as f:
                f.write(text)
            count += 1
    print(f"{len(FIXTURES)} functions, {count} files")


if __name__ == "__main__":
    sys.exit(main())
