// DOM wiring: start/stop controls, connection status, live caption feed
// with category badges, and a mute toggle.

import { HtmlAudioPlayer } from './audioQueue'
import { ClientSession, type FrameSource, type SocketLike } from './session'

const CAPTURE_MAX_WIDTH = 640
const CAPTURE_MAX_HEIGHT = 480
const JPEG_QUALITY = 0.8

class CameraSource implements FrameSource {
  private stream: MediaStream | null = null
  private video: HTMLVideoElement | null = null
  private canvas = document.createElement('canvas')

  async open(): Promise<void> {
    this.stream = await navigator.mediaDevices.getUserMedia({
      video: { width: { ideal: CAPTURE_MAX_WIDTH }, height: { ideal: CAPTURE_MAX_HEIGHT } },
      audio: false,
    })
    const video = document.createElement('video')
    video.srcObject = this.stream
    video.muted = true
    await video.play()
    this.video = video
  }

  async grab(): Promise<Uint8Array> {
    if (!this.video) throw new Error('camera not open')
    const scale = Math.min(
      1,
      CAPTURE_MAX_WIDTH / this.video.videoWidth,
      CAPTURE_MAX_HEIGHT / this.video.videoHeight,
    )
    this.canvas.width = Math.round(this.video.videoWidth * scale)
    this.canvas.height = Math.round(this.video.videoHeight * scale)
    const ctx = this.canvas.getContext('2d')!
    ctx.drawImage(this.video, 0, 0, this.canvas.width, this.canvas.height)
    const blob: Blob = await new Promise((resolve, reject) =>
      this.canvas.toBlob(
        (b) => (b ? resolve(b) : reject(new Error('jpeg encode failed'))),
        'image/jpeg',
        JPEG_QUALITY,
      ),
    )
    return new Uint8Array(await blob.arrayBuffer())
  }

  close(): void {
    this.stream?.getTracks().forEach((track) => track.stop())
    this.stream = null
    this.video = null
  }
}

function browserSocket(url: string): SocketLike {
  const ws = new WebSocket(url)
  const adapter: SocketLike = {
    send: (data) => ws.send(data),
    close: () => ws.close(),
    onopen: null,
    onmessage: null,
    onclose: null,
    onerror: null,
  }
  ws.onopen = () => adapter.onopen?.()
  ws.onmessage = (event) => adapter.onmessage?.(String(event.data))
  ws.onclose = () => adapter.onclose?.()
  ws.onerror = (event) => adapter.onerror?.(event)
  return adapter
}

function byId<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T
}

function setUp(): void {
  const statusEl = byId<HTMLSpanElement>('status')
  const errorEl = byId<HTMLDivElement>('error')
  const captionsEl = byId<HTMLUListElement>('captions')
  const startBtn = byId<HTMLButtonElement>('start')
  const stopBtn = byId<HTMLButtonElement>('stop')
  const muteBox = byId<HTMLInputElement>('mute')
  const urlInput = byId<HTMLInputElement>('server-url')

  const session = new ClientSession({
    connect: browserSocket,
    frames: new CameraSource(),
    player: new HtmlAudioPlayer(),
    onState: (state, detail) => {
      statusEl.textContent = state
      statusEl.dataset.state = state
      errorEl.textContent = state === 'error' ? detail : ''
      startBtn.disabled = state === 'running' || state === 'connecting'
      stopBtn.disabled = state !== 'running'
    },
    onCaption: ({ text, category, batchIndex }) => {
      const item = document.createElement('li')
      item.className = `caption caption-${category}`
      const badge = document.createElement('span')
      badge.className = 'badge'
      badge.textContent = category
      item.appendChild(badge)
      item.appendChild(document.createTextNode(` [#${batchIndex}] ${text}`))
      captionsEl.prepend(item)
      while (captionsEl.children.length > 50) captionsEl.lastChild?.remove()
    },
    log: (message) => console.warn('[amava]', message),
  })

  startBtn.onclick = () => void session.start(urlInput.value)
  stopBtn.onclick = () => session.stop()
  muteBox.onchange = () => session.setMuted(muteBox.checked)
}

if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', setUp)
}
