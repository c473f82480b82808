/**
 * DSM1 binary matrix format: magic bytes "DSM1", two little-endian u64
 * giving row and column counts, then rows*cols little-endian float64 values
 * in row-major order. Round trips are bit exact.
 */

import { readFileSync, writeFileSync } from 'fs'

const MAGIC = Buffer.from('DSM1', 'ascii')

export interface Matrix {
  rows: number
  cols: number
  /** row-major, length rows*cols */
  data: Float64Array
}

export function writeDsm1(path: string, matrix: Matrix): void {
  const { rows, cols, data } = matrix
  if (data.length !== rows * cols) {
    throw new Error(`matrix data has ${data.length} values, expected ${rows * cols}`)
  }
  const header = Buffer.alloc(20)
  MAGIC.copy(header, 0)
  header.writeBigUInt64LE(BigInt(rows), 4)
  header.writeBigUInt64LE(BigInt(cols), 12)
  const body = Buffer.alloc(data.length * 8)
  for (let i = 0; i < data.length; i++) {
    body.writeDoubleLE(data[i], i * 8)
  }
  writeFileSync(path, Buffer.concat([header, body]))
}

export function readDsm1(path: string): Matrix {
  const raw = readFileSync(path)
  if (raw.length < 20 || !raw.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`${path}: not a DSM1 file`)
  }
  const rows = Number(raw.readBigUInt64LE(4))
  const cols = Number(raw.readBigUInt64LE(12))
  if (raw.length !== 20 + rows * cols * 8) {
    throw new Error(`${path}: truncated DSM1 payload`)
  }
  const data = new Float64Array(rows * cols)
  for (let i = 0; i < data.length; i++) {
    data[i] = raw.readDoubleLE(20 + i * 8)
  }
  return { rows, cols, data }
}
