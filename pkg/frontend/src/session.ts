// Client session state machine: camera capture at a fixed cadence, the
// hello handshake, and ordered audio/caption handling. Every external
// surface (socket, camera, audio output, clock) is injected so the whole
// thing runs headless under fake timers in tests.

import { PlaybackQueue, type ClipPlayer } from './audioQueue'
import {
  decodeBase64,
  encodeBase64,
  parseServerMessage,
  type AudioMessage,
  type CaptionMessage,
} from './protocol'

export type UiState = 'idle' | 'connecting' | 'running' | 'error'

export interface SocketLike {
  send(data: string): void
  close(): void
  onopen: (() => void) | null
  onmessage: ((data: string) => void) | null
  onclose: (() => void) | null
  onerror: ((error: unknown) => void) | null
}

export interface FrameSource {
  /** Acquire the camera; rejects when permission is denied. */
  open(): Promise<void>
  /** One JPEG-encoded frame, capped at 640x480 before encoding. */
  grab(): Promise<Uint8Array>
  close(): void
}

export interface CaptionEvent {
  text: string
  category: string
  batchIndex: number
}

export interface SessionDeps {
  connect: (url: string) => SocketLike
  frames: FrameSource
  player: ClipPlayer
  onState?: (state: UiState, detail: string) => void
  onCaption?: (caption: CaptionEvent) => void
  log?: (message: string) => void
  captureIntervalMs?: number
  handshakeTimeoutMs?: number
  now?: () => number
}

export const CLIENT_VERSION = 'amava-web/0.1'

export class ClientSession {
  state: UiState = 'idle'
  sessionId: string | null = null
  framesSent = 0

  private socket: SocketLike | null = null
  private timer: ReturnType<typeof setInterval> | null = null
  private seq = 0
  private t0 = 0
  private queue: PlaybackQueue
  private categories = new Map<number, string>()
  private deps: Required<Pick<SessionDeps, 'captureIntervalMs' | 'handshakeTimeoutMs'>> &
    SessionDeps

  constructor(deps: SessionDeps) {
    this.deps = { captureIntervalMs: 500, handshakeTimeoutMs: 5000, ...deps }
    this.queue = new PlaybackQueue(deps.player, (msg) => this.log(msg))
  }

  private log(message: string): void {
    this.deps.log?.(message)
  }

  private setState(state: UiState, detail = ''): void {
    this.state = state
    this.deps.onState?.(state, detail)
  }

  private nowMs(): number {
    return this.deps.now ? this.deps.now() : Date.now()
  }

  get playbackQueue(): PlaybackQueue {
    return this.queue
  }

  async start(url: string): Promise<void> {
    if (this.state === 'running' || this.state === 'connecting') return
    this.setState('connecting', 'requesting camera')
    try {
      await this.deps.frames.open()
    } catch (err) {
      this.setState('error', `camera permission denied: ${String(err)}`)
      return
    }
    let socket: SocketLike
    try {
      socket = this.deps.connect(url)
    } catch (err) {
      this.deps.frames.close()
      this.setState('error', `cannot reach server: ${String(err)}`)
      return
    }
    this.socket = socket
    try {
      const ack = await this.handshake(socket)
      this.sessionId = ack.session_id
    } catch (err) {
      this.teardown()
      this.setState('error', `handshake failed: ${String(err)}`)
      return
    }
    this.seq = 0
    this.framesSent = 0
    this.t0 = this.nowMs()
    this.queue.reset()
    this.categories.clear()
    socket.onmessage = (data) => this.handleMessage(data)
    socket.onclose = () => {
      if (this.state === 'running') {
        this.teardown()
        this.setState('error', 'connection lost')
      }
    }
    this.timer = setInterval(() => void this.tick(), this.deps.captureIntervalMs)
    this.setState('running', `session ${this.sessionId}`)
  }

  private handshake(socket: SocketLike): Promise<{ session_id: string; capture_hz: number }> {
    return new Promise((resolve, reject) => {
      const timeout = setTimeout(
        () => reject(new Error('no reply from server')),
        this.deps.handshakeTimeoutMs,
      )
      socket.onerror = (err) => {
        clearTimeout(timeout)
        reject(new Error(String(err)))
      }
      socket.onclose = () => {
        clearTimeout(timeout)
        reject(new Error('socket closed during handshake'))
      }
      socket.onmessage = (data) => {
        const msg = parseServerMessage(data)
        if (msg && msg.kind === 'hello_ack') {
          clearTimeout(timeout)
          resolve(msg)
        } else if (msg && msg.kind === 'error') {
          clearTimeout(timeout)
          reject(new Error(`${msg.code}: ${msg.message}`))
        }
      }
      const sendHello = () =>
        socket.send(JSON.stringify({ kind: 'hello', client_version: CLIENT_VERSION }))
      if (socket.onopen === undefined || socket.onopen === null) {
        socket.onopen = sendHello
      }
      // stub sockets may be open already; sending immediately is harmless
      try {
        sendHello()
      } catch {
        // browser sockets throw until open; onopen will retry
      }
    })
  }

  private async tick(): Promise<void> {
    if (this.state !== 'running' || !this.socket || !this.sessionId) return
    const seq = this.seq++
    let jpeg: Uint8Array
    try {
      jpeg = await this.deps.frames.grab()
    } catch (err) {
      this.log(`frame ${seq} capture failed: ${String(err)}`)
      return
    }
    if (this.state !== 'running' || !this.socket) return
    try {
      this.socket.send(
        JSON.stringify({
          kind: 'frame',
          session_id: this.sessionId,
          seq,
          captured_at_ms: this.nowMs() - this.t0,
          jpeg_b64: encodeBase64(jpeg),
        }),
      )
      this.framesSent++
    } catch (err) {
      this.log(`frame ${seq} send failed: ${String(err)}`)
    }
  }

  private handleMessage(raw: string): void {
    const msg = parseServerMessage(raw)
    if (!msg) {
      this.log('unparseable server message dropped')
      return
    }
    if (msg.kind === 'audio') this.handleAudio(msg)
    else if (msg.kind === 'caption') this.handleCaption(msg)
    else if (msg.kind === 'error') this.log(`server error ${msg.code}: ${msg.message}`)
  }

  private handleAudio(msg: AudioMessage): void {
    this.categories.set(msg.batch_index, msg.category)
    let data: Uint8Array
    try {
      data = decodeBase64(msg.audio_b64)
    } catch (err) {
      this.log(`clip for batch ${msg.batch_index} skipped: ${String(err)}`)
      return
    }
    this.queue.enqueue({ data, mime: msg.mime, batchIndex: msg.batch_index })
  }

  private handleCaption(msg: CaptionMessage): void {
    const category = this.categories.get(msg.batch_index) ?? 'description'
    this.deps.onCaption?.({ text: msg.text, category, batchIndex: msg.batch_index })
  }

  setMuted(muted: boolean): void {
    this.queue.setMuted(muted)
  }

  stop(): void {
    if (this.state === 'idle') return
    if (this.socket && this.sessionId) {
      try {
        this.socket.send(JSON.stringify({ kind: 'bye', session_id: this.sessionId }))
      } catch {
        // socket already gone; nothing to say goodbye to
      }
    }
    this.teardown()
    this.sessionId = null
    this.setState('idle', '')
  }

  private teardown(): void {
    if (this.timer !== null) {
      clearInterval(this.timer)
      this.timer = null
    }
    this.queue.stop()
    this.deps.frames.close()
    if (this.socket) {
      const socket = this.socket
      this.socket = null
      socket.onclose = null
      try {
        socket.close()
      } catch {
        // already closed
      }
    }
  }
}
