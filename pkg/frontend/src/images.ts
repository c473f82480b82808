/**
 * Image listing and decoding. Supported formats: PNG (via pngjs) and the
 * netpbm family (P2/P3 ascii, P5/P6 binary). Decoded pixels are float32 in
 * [0, 1], channels-last, 1 or 3 channels.
 */

import { readFileSync, readdirSync, statSync } from 'fs'
import { extname, join } from 'path'
import { PNG } from 'pngjs'

export interface DecodedImage {
  width: number
  height: number
  channels: 1 | 3
  /** height * width * channels, row-major, [0, 1] */
  data: Float32Array
}

const EXTENSIONS = new Set(['.png', '.pgm', '.ppm', '.pnm'])

/** Image files of a directory in lexicographic (byte order) filename order. */
export function listImages(dir: string): string[] {
  const names = readdirSync(dir)
    .filter(name => EXTENSIONS.has(extname(name).toLowerCase()))
    .filter(name => statSync(join(dir, name)).isFile())
  names.sort()
  return names
}

export function decodeImage(path: string): DecodedImage {
  const ext = extname(path).toLowerCase()
  const raw = readFileSync(path)
  if (ext === '.png') return decodePng(path, raw)
  return decodeNetpbm(path, raw)
}

function decodePng(path: string, raw: Buffer): DecodedImage {
  let png: PNG
  try {
    png = PNG.sync.read(raw)
  } catch (err) {
    throw new Error(`${path}: PNG decode failed: ${(err as Error).message}`)
  }
  const { width, height } = png
  const out = new Float32Array(width * height * 3)
  for (let i = 0; i < width * height; i++) {
    out[i * 3] = png.data[i * 4] / 255
    out[i * 3 + 1] = png.data[i * 4 + 1] / 255
    out[i * 3 + 2] = png.data[i * 4 + 2] / 255
  }
  return { width, height, channels: 3, data: out }
}

function decodeNetpbm(path: string, raw: Buffer): DecodedImage {
  const magic = raw.subarray(0, 2).toString('ascii')
  if (!['P2', 'P3', 'P5', 'P6'].includes(magic)) {
    throw new Error(`${path}: unsupported image format (magic ${magic})`)
  }
  const gray = magic === 'P2' || magic === 'P5'
  const binary = magic === 'P5' || magic === 'P6'

  // header: magic, width, height, maxval; '#' comments allowed between tokens
  const tokens: string[] = []
  let pos = 2
  while (tokens.length < 3 && pos < raw.length) {
    const ch = String.fromCharCode(raw[pos])
    if (ch === '#') {
      while (pos < raw.length && raw[pos] !== 0x0a) pos++
    } else if (/\s/.test(ch)) {
      pos++
    } else {
      let token = ''
      while (pos < raw.length && !/\s/.test(String.fromCharCode(raw[pos]))) {
        token += String.fromCharCode(raw[pos])
        pos++
      }
      tokens.push(token)
    }
  }
  const [width, height, maxval] = tokens.map(Number)
  if (!(width > 0 && height > 0 && maxval > 0 && maxval < 65536)) {
    throw new Error(`${path}: malformed netpbm header`)
  }
  pos++ // single whitespace after maxval
  const channels: 1 | 3 = gray ? 1 : 3
  const count = width * height * channels
  const out = new Float32Array(count)
  if (binary) {
    const wide = maxval > 255
    const need = count * (wide ? 2 : 1)
    if (raw.length - pos < need) {
      throw new Error(`${path}: truncated pixel data`)
    }
    for (let i = 0; i < count; i++) {
      const v = wide ? raw.readUInt16BE(pos + i * 2) : raw[pos + i]
      out[i] = v / maxval
    }
  } else {
    const values = raw
      .subarray(pos)
      .toString('ascii')
      .trim()
      .split(/\s+/)
      .map(Number)
    if (values.length < count) {
      throw new Error(`${path}: truncated pixel data`)
    }
    for (let i = 0; i < count; i++) out[i] = values[i] / maxval
  }
  return { width, height, channels, data: out }
}
