/**
 * The extraction job: images in, DSM1 matrices and a run-manifest fragment
 * out. Row order is the lexicographic filename order and is recorded in the
 * manifest so downstream ids stay joinable.
 */

import * as tf from '@tensorflow/tfjs'
import { Backbone, buildTinyCnn, loadBackbone, mulberry32 } from './backbone.js'
import { Matrix } from './dsm1.js'
import { decodeImage, listImages } from './images.js'
import { loadLayersModelFromDir } from './fsio.js'
import { preprocess } from './preprocess.js'
import { join } from 'path'

export interface ExtractionJob {
  imagesDir: string
  backbone?: string
  model?: string
  batchSize?: number
}

export interface FeatureResult {
  names: string[]
  matrix: Matrix
  backbone: string
  inputSize: number
}

export interface ProbabilityResult {
  names: string[]
  matrix: Matrix
  model: string
  softmaxApplied: boolean
}

const DEFAULT_BATCH = 16

async function ensureCpuBackend(): Promise<void> {
  if (tf.getBackend() !== 'cpu') {
    await tf.setBackend('cpu')
  }
  await tf.ready()
}

function loadPixelBatches(
  dir: string,
  names: string[],
  inputSize: number,
  batchSize: number,
): Float32Array[] {
  const failures: string[] = []
  const batches: Float32Array[] = []
  for (let start = 0; start < names.length; start += batchSize) {
    const slice = names.slice(start, start + batchSize)
    const batch = new Float32Array(slice.length * inputSize * inputSize * 3)
    slice.forEach((name, i) => {
      try {
        const pixels = preprocess(decodeImage(join(dir, name)), inputSize)
        batch.set(pixels, i * inputSize * inputSize * 3)
      } catch (err) {
        failures.push(`${name}: ${(err as Error).message}`)
      }
    })
    batches.push(batch)
  }
  if (failures.length > 0) {
    throw new Error(`unreadable images:\n  ${failures.join('\n  ')}`)
  }
  return batches
}

function toFloat64Rows(chunks: Float32Array[], cols: number): Matrix {
  const rows = chunks.reduce((acc, c) => acc + c.length / cols, 0)
  const data = new Float64Array(rows * cols)
  let offset = 0
  for (const chunk of chunks) {
    for (let i = 0; i < chunk.length; i++) data[offset + i] = chunk[i]
    offset += chunk.length
  }
  return { rows, cols, data }
}

export async function extractFeatures(job: ExtractionJob): Promise<FeatureResult> {
  await ensureCpuBackend()
  const backbone = await loadBackbone(job.backbone)
  const names = listImages(job.imagesDir)
  if (names.length === 0) {
    throw new Error(`${job.imagesDir}: no readable images (png/pgm/ppm)`)
  }
  const batchSize = job.batchSize ?? DEFAULT_BATCH
  const chunks: Float32Array[] = []
  for (const pixels of loadPixelBatches(job.imagesDir, names, backbone.inputSize, batchSize)) {
    const count = pixels.length / (backbone.inputSize * backbone.inputSize * 3)
    const embedded = tf.tidy(() => {
      const batch = tf.tensor4d(pixels, [count, backbone.inputSize, backbone.inputSize, 3])
      return backbone.embed(batch)
    })
    chunks.push(embedded.dataSync() as Float32Array)
    embedded.dispose()
  }
  return {
    names,
    matrix: toFloat64Rows(chunks, backbone.dim),
    backbone: backbone.name,
    inputSize: backbone.inputSize,
  }
}

/** Deterministic demo classifier: the seeded embedding plus a seeded head. */
function buildToyClassifier(classes: number): tf.LayersModel {
  const base = buildTinyCnn()
  const rand = mulberry32(0xc1a55 + classes)
  const head = tf.layers.dense({ units: classes })
  const logits = head.apply(base.outputs[0]) as tf.SymbolicTensor
  const model = tf.model({ inputs: base.inputs, outputs: logits })
  const headWeights = head.getWeights().map(w => {
    const values = new Float32Array(w.size)
    const scale = Math.sqrt(2 / (w.size / (w.shape[w.shape.length - 1] as number)))
    for (let i = 0; i < values.length; i++) values[i] = (rand() * 2 - 1) * scale
    return tf.tensor(values, w.shape)
  })
  head.setWeights(headWeights)
  headWeights.forEach(t => t.dispose())
  return model
}

async function loadClassifier(spec: string): Promise<{ model: tf.LayersModel; wantsGray: boolean; inputSize: number }> {
  if (spec.startsWith('builtin:toy')) {
    const classes = Number(spec.slice('builtin:toy'.length))
    if (!Number.isInteger(classes) || classes < 2) {
      throw new Error(`${spec}: class count must be an integer >= 2`)
    }
    return { model: buildToyClassifier(classes), wantsGray: false, inputSize: 64 }
  }
  const model = await loadLayersModelFromDir(spec)
  const inShape = model.inputs[0].shape
  if (inShape.length !== 4 || inShape[1] !== inShape[2]) {
    throw new Error(`${spec}: expected a square image input, got ${inShape}`)
  }
  const channels = inShape[3] as number
  return { model, wantsGray: channels === 1, inputSize: inShape[1] as number }
}

export async function extractProbabilities(job: ExtractionJob): Promise<ProbabilityResult> {
  if (!job.model) {
    throw new Error('probability extraction needs a model (builtin:toy<m> or a model directory)')
  }
  await ensureCpuBackend()
  const { model, wantsGray, inputSize } = await loadClassifier(job.model)
  const names = listImages(job.imagesDir)
  if (names.length === 0) {
    throw new Error(`${job.imagesDir}: no readable images (png/pgm/ppm)`)
  }
  const batchSize = job.batchSize ?? DEFAULT_BATCH
  const chunks: Float32Array[] = []
  let cols = 0
  for (const pixels of loadPixelBatches(job.imagesDir, names, inputSize, batchSize)) {
    const count = pixels.length / (inputSize * inputSize * 3)
    const out = tf.tidy(() => {
      let batch: tf.Tensor = tf.tensor4d(pixels, [count, inputSize, inputSize, 3])
      if (wantsGray) batch = batch.mean(3, true)
      const raw = model.predict(batch) as tf.Tensor
      return raw.reshape([count, raw.size / count])
    })
    cols = out.shape[1] as number
    chunks.push(out.dataSync() as Float32Array)
    out.dispose()
  }
  const matrix = toFloat64Rows(chunks, cols)
  const softmaxApplied = applySoftmaxIfLogits(matrix)
  return { names, matrix, model: job.model, softmaxApplied }
}

/**
 * Detects logits (rows that are not a probability distribution) and applies
 * a row-wise softmax in place. Returns whether softmax was applied.
 */
function applySoftmaxIfLogits(matrix: Matrix): boolean {
  const { rows, cols, data } = matrix
  let isDistribution = true
  for (let r = 0; r < rows && isDistribution; r++) {
    let sum = 0
    for (let c = 0; c < cols; c++) {
      const v = data[r * cols + c]
      if (v < -1e-9 || v > 1 + 1e-9) isDistribution = false
      sum += v
    }
    if (Math.abs(sum - 1) > 1e-5) isDistribution = false
  }
  if (isDistribution) return false
  for (let r = 0; r < rows; r++) {
    let max = -Infinity
    for (let c = 0; c < cols; c++) max = Math.max(max, data[r * cols + c])
    let sum = 0
    for (let c = 0; c < cols; c++) {
      const e = Math.exp(data[r * cols + c] - max)
      data[r * cols + c] = e
      sum += e
    }
    for (let c = 0; c < cols; c++) data[r * cols + c] /= sum
  }
  return true
}
