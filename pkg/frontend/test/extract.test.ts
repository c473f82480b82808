import { execFileSync } from 'child_process'
import { mkdtempSync, readFileSync, writeFileSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'
import { PNG } from 'pngjs'
import { beforeAll, describe, expect, it } from 'vitest'
import * as tf from '@tensorflow/tfjs'

import { mulberry32 } from '../src/backbone.js'
import { run } from '../src/cli.js'
import { readDsm1 } from '../src/dsm1.js'
import { extractFeatures, extractProbabilities } from '../src/extract.js'
import { saveLayersModelToDir } from '../src/fsio.js'

const IMAGE_COUNT = 50

function writeNoisePng(path: string, seed: number, size = 48): void {
  const png = new PNG({ width: size, height: size })
  const rand = mulberry32(seed)
  for (let i = 0; i < size * size; i++) {
    png.data[i * 4] = Math.floor(rand() * 256)
    png.data[i * 4 + 1] = Math.floor(rand() * 256)
    png.data[i * 4 + 2] = Math.floor(rand() * 256)
    png.data[i * 4 + 3] = 255
  }
  writeFileSync(path, PNG.sync.write(png))
}

/** 50 images; img00 and img49 are byte-identical duplicates. */
function makeImageFolder(): string {
  const dir = mkdtempSync(join(tmpdir(), 'extract-'))
  for (let i = 0; i < IMAGE_COUNT - 1; i++) {
    writeNoisePng(join(dir, `img${String(i).padStart(2, '0')}.png`), 1000 + i)
  }
  const first = readFileSync(join(dir, 'img00.png'))
  writeFileSync(join(dir, `img${IMAGE_COUNT - 1}.png`), first)
  return dir
}

function cosine(a: Float64Array, b: Float64Array): number {
  let dot = 0
  let na = 0
  let nb = 0
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i]
    na += a[i] * a[i]
    nb += b[i] * b[i]
  }
  return dot / Math.sqrt(na * nb)
}

describe('extraction acceptance', () => {
  let images: string

  beforeAll(() => {
    images = makeImageFolder()
  })

  it('emits aligned matrices that satisfy the engine contracts', async () => {
    const features = await extractFeatures({ imagesDir: images })
    const probs = await extractProbabilities({ imagesDir: images, model: 'builtin:toy10' })

    expect(features.matrix.rows).toBe(IMAGE_COUNT)
    expect(probs.matrix.rows).toBe(IMAGE_COUNT)
    expect(features.names).toEqual(probs.names)

    // feature rows are finite; probability rows are stochastic
    for (const v of features.matrix.data) expect(Number.isFinite(v)).toBe(true)
    const { rows, cols, data } = probs.matrix
    expect(cols).toBe(10)
    for (let r = 0; r < rows; r++) {
      let sum = 0
      for (let c = 0; c < cols; c++) {
        const v = data[r * cols + c]
        expect(v).toBeGreaterThanOrEqual(0)
        expect(v).toBeLessThanOrEqual(1)
        sum += v
      }
      expect(Math.abs(sum - 1)).toBeLessThan(1e-5)
    }
  })

  it('gives duplicate images identical feature rows', async () => {
    const { matrix } = await extractFeatures({ imagesDir: images })
    const d = matrix.cols
    const firstRow = matrix.data.slice(0, d)
    const lastRow = matrix.data.slice((IMAGE_COUNT - 1) * d, IMAGE_COUNT * d)
    expect(cosine(firstRow, lastRow)).toBeGreaterThanOrEqual(1 - 1e-6)
  })

  it('reproduces identical bytes when re-run', async () => {
    const out = mkdtempSync(join(tmpdir(), 'extract-out-'))
    const argvFor = (tag: string) => [
      '--images', images,
      '--out-features', join(out, `f${tag}.dsm1`),
      '--model', 'builtin:toy10',
      '--out-probs', join(out, `p${tag}.dsm1`),
      '--manifest', join(out, `m${tag}.json`),
    ]
    expect(await run(argvFor('1'))).toBe(0)
    expect(await run(argvFor('2'))).toBe(0)
    expect(readFileSync(join(out, 'f1.dsm1')).equals(readFileSync(join(out, 'f2.dsm1')))).toBe(true)
    expect(readFileSync(join(out, 'p1.dsm1')).equals(readFileSync(join(out, 'p2.dsm1')))).toBe(true)
  })

  it('records row order and shapes in the manifest', async () => {
    const out = mkdtempSync(join(tmpdir(), 'extract-out-'))
    const code = await run([
      '--images', images,
      '--out-features', join(out, 'features.dsm1'),
      '--model', 'builtin:toy10',
      '--out-probs', join(out, 'probabilities.dsm1'),
      '--manifest', join(out, 'manifest.json'),
    ])
    expect(code).toBe(0)
    const doc = JSON.parse(readFileSync(join(out, 'manifest.json'), 'utf-8'))
    expect(doc.n).toBe(IMAGE_COUNT)
    expect(doc.m).toBe(10)
    expect(doc.extractor.image_order.length).toBe(IMAGE_COUNT)
    expect([...doc.extractor.image_order].sort()).toEqual(doc.extractor.image_order)
    const feats = readDsm1(join(out, 'features.dsm1'))
    expect(feats.rows).toBe(doc.n)
    expect(feats.cols).toBe(doc.d)
  })

  it('passes the selection engine validation when available', async () => {
    const out = mkdtempSync(join(tmpdir(), 'extract-out-'))
    const code = await run([
      '--images', images,
      '--out-features', join(out, 'features.dsm1'),
      '--model', 'builtin:toy10',
      '--out-probs', join(out, 'probabilities.dsm1'),
      '--manifest', join(out, 'manifest.json'),
    ])
    expect(code).toBe(0)
    let available = true
    try {
      execFileSync('python3', ['-c', 'import deepselect'], { stdio: 'pipe' })
    } catch {
      available = false
    }
    if (!available) {
      console.warn('deepselect not importable; skipping cross-validation')
      return
    }
    const output = execFileSync(
      'python3',
      ['-m', 'deepselect.cli', 'validate', join(out, 'manifest.json')],
      { encoding: 'utf-8' },
    )
    expect(output).toContain('ok: probabilities')
    expect(output).toContain('ok: features')
  })
})

describe('user-supplied models', () => {
  it('loads a saved softmax model without re-normalizing', async () => {
    const dir = mkdtempSync(join(tmpdir(), 'model-'))
    const model = tf.sequential({
      layers: [
        tf.layers.flatten({ inputShape: [16, 16, 3] }),
        tf.layers.dense({ units: 5, activation: 'softmax' }),
      ],
    })
    await saveLayersModelToDir(model, dir)
    const images = mkdtempSync(join(tmpdir(), 'model-img-'))
    for (let i = 0; i < 4; i++) writeNoisePng(join(images, `i${i}.png`), 7 + i, 16)
    const probs = await extractProbabilities({ imagesDir: images, model: dir })
    expect(probs.softmaxApplied).toBe(false)
    expect(probs.matrix.cols).toBe(5)
  })

  it('applies softmax to logits-only models and says so', async () => {
    const dir = mkdtempSync(join(tmpdir(), 'model-'))
    const model = tf.sequential({
      layers: [
        tf.layers.flatten({ inputShape: [16, 16, 3] }),
        tf.layers.dense({ units: 5 }),
      ],
    })
    await saveLayersModelToDir(model, dir)
    const images = mkdtempSync(join(tmpdir(), 'model-img-'))
    for (let i = 0; i < 4; i++) writeNoisePng(join(images, `i${i}.png`), 70 + i, 16)
    const probs = await extractProbabilities({ imagesDir: images, model: dir })
    expect(probs.softmaxApplied).toBe(true)
    for (let r = 0; r < probs.matrix.rows; r++) {
      let sum = 0
      for (let c = 0; c < 5; c++) sum += probs.matrix.data[r * 5 + c]
      expect(Math.abs(sum - 1)).toBeLessThan(1e-9)
    }
  })

  it('uses the penultimate layer of a file backbone', async () => {
    const dir = mkdtempSync(join(tmpdir(), 'model-'))
    const model = tf.sequential({
      layers: [
        tf.layers.flatten({ inputShape: [8, 8, 3] }),
        tf.layers.dense({ units: 12, activation: 'relu' }),
        tf.layers.dense({ units: 3, activation: 'softmax' }),
      ],
    })
    await saveLayersModelToDir(model, dir)
    const images = mkdtempSync(join(tmpdir(), 'model-img-'))
    for (let i = 0; i < 3; i++) writeNoisePng(join(images, `i${i}.png`), 700 + i, 8)
    const features = await extractFeatures({ imagesDir: images, backbone: `file:${dir}` })
    expect(features.matrix.cols).toBe(12)
    expect(features.inputSize).toBe(8)
  })
})

describe('cli argument handling', () => {
  it('rejects missing inputs with exit 2', async () => {
    expect(await run([])).toBe(2)
    expect(await run(['--images', 'somewhere'])).toBe(2)
    expect(await run(['--images', 'somewhere', '--out-probs', 'p.dsm1'])).toBe(2)
  })

  it('fails with exit 2 on an empty image folder', async () => {
    const dir = mkdtempSync(join(tmpdir(), 'empty-'))
    const out = mkdtempSync(join(tmpdir(), 'empty-out-'))
    expect(
      await run(['--images', dir, '--out-features', join(out, 'f.dsm1')]),
    ).toBe(2)
  })

  it('names the unreadable file in decode failures', async () => {
    const dir = mkdtempSync(join(tmpdir(), 'bad-'))
    writeNoisePng(join(dir, 'ok.png'), 1)
    writeFileSync(join(dir, 'corrupt.png'), Buffer.from('nope'))
    const out = mkdtempSync(join(tmpdir(), 'bad-out-'))
    const code = await run(['--images', dir, '--out-features', join(out, 'f.dsm1')])
    expect(code).toBe(2)
  })
})
